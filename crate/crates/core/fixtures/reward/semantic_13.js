print(abs);

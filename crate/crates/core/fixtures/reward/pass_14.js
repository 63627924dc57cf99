print(typeof 1);

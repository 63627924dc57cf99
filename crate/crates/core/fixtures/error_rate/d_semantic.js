print(missing);

parseInt('7', 99);

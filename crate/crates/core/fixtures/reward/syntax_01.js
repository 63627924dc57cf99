print(1 +);

let 9z = 1;

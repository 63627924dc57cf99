var z = 1;

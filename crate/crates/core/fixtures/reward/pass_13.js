let m = -5;

const c = 7;

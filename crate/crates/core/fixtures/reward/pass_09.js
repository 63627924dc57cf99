let b = true;

let w = [1, 2]; w.charAt(0);

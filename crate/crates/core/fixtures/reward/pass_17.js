let k = 1; while (k < 2) { k += 1; }

nothing_here = 3;

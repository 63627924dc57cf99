let f = 1 / 1;
let g = -f;
print(g < 0, !g, typeof (g + ""));

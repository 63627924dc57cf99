let f = 12 / 2;
let g = -f;
print(g < 0, !g, typeof (g + ""));

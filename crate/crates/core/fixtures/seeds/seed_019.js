let f = 16 / 3;
let g = -f;
print(g < 0, !g, typeof (g + ""));

let f = 2 / 3;
let g = -f;
print(g < 0, !g, typeof (g + ""));

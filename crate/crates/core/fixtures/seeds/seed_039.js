let f = 15 / 3;
let g = -f;
print(g < 0, !g, typeof (g + ""));

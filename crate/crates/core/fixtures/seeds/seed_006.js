let n = parseInt("98");
let m = max(n, 2, 10);
let d = abs(n - m);
print(typeof d, d);

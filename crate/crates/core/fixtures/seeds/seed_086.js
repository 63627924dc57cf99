let n = parseInt("8");
let m = max(n, 4, 6);
let d = abs(n - m);
print(typeof d, d);

let n = parseInt("41");
let m = max(n, 0, 0);
let d = abs(n - m);
print(typeof d, d);

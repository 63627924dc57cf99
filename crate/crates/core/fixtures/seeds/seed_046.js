let n = parseInt("96");
let m = max(n, 4, 14);
let d = abs(n - m);
print(typeof d, d);

let n = parseInt("68");
let m = max(n, 11, 19);
let d = abs(n - m);
print(typeof d, d);

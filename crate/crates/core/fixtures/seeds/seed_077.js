let a = [3, 10, 0, 2];
let b = a.slice(1, 3);
let c = b.indexOf(0);
print(b.length + c);

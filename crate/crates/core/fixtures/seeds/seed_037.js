let a = [3, 4, 11, 2];
let b = a.slice(1, 3);
let c = b.indexOf(11);
print(b.length + c);

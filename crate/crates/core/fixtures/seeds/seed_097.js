let a = [10, 15, 6, 1];
let b = a.slice(1, 3);
let c = b.indexOf(6);
print(b.length + c);

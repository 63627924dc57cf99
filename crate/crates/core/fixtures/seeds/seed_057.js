let a = [7, 11, 10, 1];
let b = a.slice(1, 3);
let c = b.indexOf(10);
print(b.length + c);

let a = [7, 17, 2, 1];
let b = a.slice(1, 3);
let c = b.indexOf(2);
print(b.length + c);

let a = [1, 2, 3, 4];
let i = 0;
while (i < 1) {
  let b = a.slice(3, 1);
  i += 1;
}

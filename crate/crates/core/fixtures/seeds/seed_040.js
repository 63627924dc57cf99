let a = [20, 14, 11];
let i = 0;
while (i < a.length) {
  let part = a.slice(i, a.length);
  print(part.join("-"));
  i += 1;
}

let a = [14, 19, 3];
let i = 0;
while (i < a.length) {
  let part = a.slice(i, a.length);
  print(part.join("-"));
  i += 1;
}

let x = 13;
let y = 2;
if (x > y) {
  print(x - y);
} else if (x == y) {
  print(0);
} else {
  print(y * 2);
}

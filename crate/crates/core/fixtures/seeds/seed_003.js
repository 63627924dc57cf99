let x = 4;
let y = 7;
if (x > y) {
  print(x - y);
} else if (x == y) {
  print(0);
} else {
  print(y * 2);
}

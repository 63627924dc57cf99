let x = 15;
let y = 1;
if (x > y) {
  print(x - y);
} else if (x == y) {
  print(0);
} else {
  print(y * 2);
}

let x = 17;
let y = 20;
if (x > y) {
  print(x - y);
} else if (x == y) {
  print(0);
} else {
  print(y * 2);
}

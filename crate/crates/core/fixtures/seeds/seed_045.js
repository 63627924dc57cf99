let total = 0;
let k = 0;
while (k < 6) {
  total += k * 4;
  if (total > 43) {
    break;
  }
  k = k + 1;
}
print(total);

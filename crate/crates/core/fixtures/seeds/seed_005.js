let total = 0;
let k = 0;
while (k < 6) {
  total += k * 2;
  if (total > 52) {
    break;
  }
  k = k + 1;
}
print(total);

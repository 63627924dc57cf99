let total = 0;
let k = 0;
while (k < 3) {
  total += k * 11;
  if (total > 24) {
    break;
  }
  k = k + 1;
}
print(total);

let total = 0;
let k = 0;
while (k < 4) {
  total += k * 6;
  if (total > 38) {
    break;
  }
  k = k + 1;
}
print(total);

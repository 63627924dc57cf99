let total = 0;
let k = 0;
while (k < 4) {
  total += k * 9;
  if (total > 47) {
    break;
  }
  k = k + 1;
}
print(total);

let arr = [16, 20];
let idx = arr.indexOf(20);
if (idx >= 0) {
  arr[idx] = arr[idx] + 19;
}
print(arr[0] + arr[1]);

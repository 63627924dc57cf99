let arr = [13, 3];
let idx = arr.indexOf(3);
if (idx >= 0) {
  arr[idx] = arr[idx] + 13;
}
print(arr[0] + arr[1]);

let arr = [12, 17];
let idx = arr.indexOf(17);
if (idx >= 0) {
  arr[idx] = arr[idx] + 6;
}
print(arr[0] + arr[1]);

let arr = [2, 19];
let idx = arr.indexOf(19);
if (idx >= 0) {
  arr[idx] = arr[idx] + 18;
}
print(arr[0] + arr[1]);

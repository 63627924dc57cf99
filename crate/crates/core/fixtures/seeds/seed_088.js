let arr = [16, 13];
let idx = arr.indexOf(13);
if (idx >= 0) {
  arr[idx] = arr[idx] + 13;
}
print(arr[0] + arr[1]);

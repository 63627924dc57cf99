let flag = true;
let count = 0;
while (!flag) {
  count += 1;
  flag = count >= 6;
}
print(count === 6 ? "done" : "odd");

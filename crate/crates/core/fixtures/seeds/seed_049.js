let flag = true;
let count = 0;
while (!flag) {
  count += 1;
  flag = count >= 4;
}
print(count === 4 ? "done" : "odd");

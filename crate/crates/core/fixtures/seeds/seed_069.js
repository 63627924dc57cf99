let flag = false;
let count = 0;
while (!flag) {
  count += 1;
  flag = count >= 5;
}
print(count === 5 ? "done" : "odd");

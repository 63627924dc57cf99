let flag = true;
let count = 0;
while (!flag) {
  count += 1;
  flag = count >= 2;
}
print(count === 2 ? "done" : "odd");

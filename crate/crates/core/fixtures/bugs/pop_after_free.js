let a = [1, 2, 3, 4];
while (a.length > 0) {
  a.pop();
}
a.pop();

let i = 5;
while (i > 0) {
  i -= 1;
  if (i == 2) {
    continue;
  }
  print(i);
}

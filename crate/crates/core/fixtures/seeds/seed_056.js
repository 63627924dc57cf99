let i = 4;
while (i > 0) {
  i -= 1;
  if (i == 1) {
    continue;
  }
  print(i);
}

let i = 6;
while (i > 0) {
  i -= 1;
  if (i == 2) {
    continue;
  }
  print(i);
}

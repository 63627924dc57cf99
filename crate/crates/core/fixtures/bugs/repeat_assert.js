let i = 0;
while (i < 2) {
  if (i == 1) {
    let s = 'abcd'.repeat(30);
  }
  i += 1;
}

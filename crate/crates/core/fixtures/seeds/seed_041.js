let s = "hi";
let n = 0;
while (n < 6) {
  if (n % 2 == 0) {
    s = s + "_";
  } else {
    let t = s.repeat(2);
    print(t.length);
  }
  n += 1;
}

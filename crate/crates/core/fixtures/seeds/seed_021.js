let s = "hi";
let n = 0;
while (n < 2) {
  if (n % 2 == 0) {
    s = s + "x";
  } else {
    let t = s.repeat(2);
    print(t.length);
  }
  n += 1;
}

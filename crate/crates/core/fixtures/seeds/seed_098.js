let s = "";
let j = 0;
while (j < 4) {
  s += "-";
  j += 1;
}
print(s, s.length);

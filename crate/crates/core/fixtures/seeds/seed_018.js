let s = "";
let j = 0;
while (j < 2) {
  s += "_";
  j += 1;
}
print(s, s.length);

let q = [];
let i = 0;
while (i < 2) {
  q.push(i * i);
  i += 1;
}
let last = q.pop();
print(q.length, last);

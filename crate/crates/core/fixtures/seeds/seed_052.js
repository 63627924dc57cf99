let v = null;
let u = undefined;
if (v == u) {
  print("same", typeof v);
}
let z = v || 1;
print(z && "bar");

let v = null;
let u = undefined;
if (v == u) {
  print("same", typeof v);
}
let z = v || 12;
print(z && "dog");

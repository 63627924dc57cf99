let v = null;
let u = undefined;
if (v == u) {
  print("same", typeof v);
}
let z = v || 4;
print(z && "hi");

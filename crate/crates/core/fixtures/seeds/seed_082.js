var stack = [];
stack.push(9);
stack.push(0);
while (stack.length > 1) {
  let top = stack.pop();
  print(top);
}

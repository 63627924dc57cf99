var stack = [];
stack.push(7);
stack.push(5);
while (stack.length > 1) {
  let top = stack.pop();
  print(top);
}

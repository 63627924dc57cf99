var stack = [];
stack.push(17);
stack.push(12);
while (stack.length > 1) {
  let top = stack.pop();
  print(top);
}

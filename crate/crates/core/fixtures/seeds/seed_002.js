var stack = [];
stack.push(1);
stack.push(13);
while (stack.length > 1) {
  let top = stack.pop();
  print(top);
}

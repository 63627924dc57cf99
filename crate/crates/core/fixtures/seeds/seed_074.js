let text = "hi".repeat(2);
if (text.length > 2) {
  print(text.slice(1, 3));
}

let text = "bar".repeat(1);
if (text.length > 1) {
  print(text.slice(1, 3));
}

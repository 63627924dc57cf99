let hex = parseInt("ff", 16);
let bin = parseInt("101", 2);
print(hex + bin, hex % 5);

let hex = parseInt("c0", 16);
let bin = parseInt("101", 2);
print(hex + bin, hex % 3);

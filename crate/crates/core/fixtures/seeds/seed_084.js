const words = ["bar", "moon"];
let joined = words.join("_");
let pos = joined.indexOf("_");
print(joined.charAt(pos + 1));

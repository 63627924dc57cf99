const words = ["foo", "qq"];
let joined = words.join("o");
let pos = joined.indexOf("o");
print(joined.charAt(pos + 1));

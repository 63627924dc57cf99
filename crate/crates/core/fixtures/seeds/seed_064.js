const words = ["ab", "sun"];
let joined = words.join("o");
let pos = joined.indexOf("o");
print(joined.charAt(pos + 1));

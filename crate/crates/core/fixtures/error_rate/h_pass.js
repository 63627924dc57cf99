let s = 'ab'; if (s.length > 1) { print(s.charAt(0)); }

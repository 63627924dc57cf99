print('unterminated);

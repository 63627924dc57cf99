let y = {;

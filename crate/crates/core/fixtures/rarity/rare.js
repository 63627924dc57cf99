decodeURI('a');

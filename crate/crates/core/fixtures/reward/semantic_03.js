decodeURI('%zz');

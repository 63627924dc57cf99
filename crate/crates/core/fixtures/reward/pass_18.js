print('x' + 'y');
